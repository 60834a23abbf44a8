# Utils package for the pursuit game toolkit
